import platform
import sys

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

compile_args = ["-O3"]
libraries = []
if sys.platform.startswith("linux") and platform.machine() in ("x86_64", "AMD64"):
    # lets gcc call glibc's SIMD exp/tanh in the gate loops; compile-time only,
    # so the process-wide FTZ/DAZ startup hook is not linked in
    compile_args += ["-ffast-math"]
    libraries += ["mvec", "m"]

extensions = [
    Extension(
        "deeplas._kernels._ckernels",
        ["src/deeplas/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        libraries=libraries,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
