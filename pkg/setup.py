from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("gazecast._kernels", ["src/gazecast/_kernels.pyx"],
                   include_dirs=[np.get_include()], optional=True)],
        language_level=3,
    )

setup(ext_modules=ext_modules)
