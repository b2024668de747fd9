"""Build script: compiles the optional fast kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes the hot loops faster. `pip install -e .
--no-build-isolation` compiles it when Cython and a C compiler are present.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "memchan.kernels._fast",
                ["src/memchan/kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
