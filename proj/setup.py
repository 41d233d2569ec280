"""Builds the _galdet extension through CMake and drops it into the
galdet package. Everything else is declared in pyproject.toml."""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        out_dir = Path(self.get_ext_fullpath(ext.name)).parent.resolve()
        out_dir.mkdir(parents=True, exist_ok=True)
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)
        source_dir = Path(__file__).parent.resolve()

        config = "Debug" if self.debug else "Release"
        subprocess.run(
            [
                "cmake",
                str(source_dir),
                f"-DCMAKE_BUILD_TYPE={config}",
                f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
                f"-DPython3_EXECUTABLE={sys.executable}",
                "-DGALDET_BUILD_TESTS=OFF",
            ],
            cwd=build_dir,
            check=True,
        )
        subprocess.run(
            [
                "cmake",
                "--build",
                ".",
                "--target",
                "_galdet",
                f"-j{os.cpu_count() or 2}",
            ],
            cwd=build_dir,
            check=True,
        )


setup(
    ext_modules=[CMakeExtension("galdet._galdet")],
    cmdclass={"build_ext": CMakeBuild},
)
