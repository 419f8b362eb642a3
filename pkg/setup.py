"""Builds the optional Cython kernel for the graph-attention layers.

If Cython or a C compiler is unavailable the install still succeeds and the
package falls back to the numpy implementation at import time.
"""

from setuptools import setup, Extension


def get_ext_modules():
    try:
        from Cython.Build import cythonize
        import numpy as np
    except ImportError:
        return []
    import os

    if not os.path.exists("src/eqsearch/gnn/_gatkernel.pyx"):
        return []
    ext = Extension(
        "eqsearch.gnn._gatkernel",
        ["src/eqsearch/gnn/_gatkernel.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=get_ext_modules())
