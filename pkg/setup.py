import platform
import sys

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    compile_args, libraries = ["-O3"], []
    if sys.platform.startswith("linux") and platform.machine() in ("x86_64", "AMD64"):
        # compile-only fast-math lets gcc call glibc's vector exp (libmvec) in
        # the inner loop; it is not passed at link time, so no process-wide
        # flush-to-zero gets installed
        compile_args.append("-ffast-math")
        libraries.append("mvec")
    ext_modules = cythonize(
        [
            Extension(
                "gsdmix._kernels",
                ["src/gsdmix/_kernels.pyx"],
                extra_compile_args=compile_args,
                libraries=libraries,
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
