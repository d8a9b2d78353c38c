"""Builds the optional compiled trajectory kernel.

If Cython or a C compiler is missing the package installs without it and the
numpy fallback is used.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("qpattern._trajectory", ["src/qpattern/_trajectory.pyx"],
                   include_dirs=[numpy.get_include()],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                   extra_compile_args=["-O3"])],
        quiet=True,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
