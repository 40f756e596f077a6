"""Build the optional compiled mining kernel.

The extension links against libcrypto for its SHA-256 implementation. If
Cython or a working C toolchain is unavailable the build degrades to the
pure-Python pipeline (wasteless.pipeline picks the backend at import time),
so installation never hard-fails on the extension.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain or headers missing
            print(f"warning: skipping compiled kernel ({exc}); "
                  f"pure-Python pipeline will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not compile {ext.name} ({exc}); "
                  f"pure-Python pipeline will be used")


def extensions():
    if os.environ.get("WASTELESS_PURE_PYTHON") == "1":
        return []
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "wasteless._kernel",
        ["src/wasteless/_kernel.pyx"],
        libraries=["crypto"],
        extra_compile_args=["-O3", "-Wno-deprecated-declarations"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
