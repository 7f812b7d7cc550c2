"""Build the optional compiled Newmark kernel.

The extension is marked optional: when the C compiler or Cython is missing the
package still installs and ``beamoma.kernels`` falls back to the numpy code.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build without Cython
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "beamoma._newmark_ext",
                ["src/beamoma/_newmark_ext.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
