"""Layer library: recurrent, convolutional, normalisation and residual blocks."""
from .layers import (
    BiConvLSTM,
    BLSTM,
    BatchNorm,
    Conv,
    ConvLSTM,
    ConvLstmParams,
    Flatten,
    Linear,
    LSTM,
    LstmParams,
    NiNModule,
    PairProject,
    ProjectedSubsample,
    ReLU,
    ResidualBlock,
    Sequential,
    SkipSubsample,
    batchnorm_seq,
    bidirectional_convlstm,
    blstm,
    convlstm_step,
    lstm_step,
    res_cnn,
    res_convlstm,
    res_lstm,
)
from .module import BIAS, BN, WEIGHT, Module, Parameter, Seq

__all__ = [
    "Module", "Parameter", "Seq", "WEIGHT", "BIAS", "BN", "LSTM", "BLSTM", "ConvLSTM", "BiConvLSTM",
    "BatchNorm", "Conv", "Flatten", "Linear", "LstmParams", "ConvLstmParams", "NiNModule", "PairProject",
    "ProjectedSubsample", "ReLU", "ResidualBlock", "Sequential", "SkipSubsample", "batchnorm_seq",
    "bidirectional_convlstm", "blstm", "convlstm_step", "lstm_step", "res_cnn", "res_convlstm", "res_lstm",
]
