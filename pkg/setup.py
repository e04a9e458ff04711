from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("bgeo.evalcore._ckernel", ["src/bgeo/evalcore/_ckernel.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # Pure-Python kernel is selected at import time when the extension is absent.
    ext_modules = []

setup(ext_modules=ext_modules)
