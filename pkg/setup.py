import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    USE_CYTHON = True
except ImportError:
    USE_CYTHON = False

# Set PAPILLEDEMA_NO_EXT=1 to install the pure-Python kernels only.
SKIP_EXT = os.environ.get("PAPILLEDEMA_NO_EXT", "") == "1"

EXTENSIONS = []
if USE_CYTHON and not SKIP_EXT:
    EXTENSIONS = cythonize(
        [Extension("papilledema._kernels", ["src/papilledema/_kernels.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=EXTENSIONS)
