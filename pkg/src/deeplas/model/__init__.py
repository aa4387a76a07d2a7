"""Listen-Attend-Spell model."""
from .las import LAS, DecoderState, EncoderOutput, Vocabulary, attention_context

__all__ = ["LAS", "DecoderState", "EncoderOutput", "Vocabulary", "attention_context"]
