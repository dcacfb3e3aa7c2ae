"""Build hook for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); any build failure here is deliberately non-fatal.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ssl_lab._kernels",
                sources=["src/ssl_lab/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    import sys

    print(f"ssl-lab: skipping native kernel build ({exc}); "
          "the pure-python backend will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
