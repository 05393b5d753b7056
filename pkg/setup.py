# Builds the optional compiled scan kernel. Run as:
#   python setup.py build_ext --inplace
# The package works without it: mvring.scan falls back to the numpy loop.
import os

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension(
            "mvring._scanloop",
            ["src/mvring/_scanloop.pyx"],
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
