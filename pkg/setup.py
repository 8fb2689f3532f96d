import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "txfem._kernels_cy",
                ["src/txfem/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off: no fused multiply-add, so the compiled
                # lane stays bit-identical to the pure-Python lane.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
