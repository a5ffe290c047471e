from setuptools import Extension, setup

setup(
    ext_modules=[
        Extension(
            "asyncsgd._atomics",
            sources=["src/asyncsgd/_atomics.c"],
            extra_compile_args=["-O3", "-std=c11"],
        )
    ]
)
