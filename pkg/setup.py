import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

ext = Extension(
    "caseqa.kernels._ckern",
    ["src/caseqa/kernels/_ckern.pyx"],
    include_dirs=[np.get_include()],
)

setup(ext_modules=cythonize([ext], language_level="3"))
