"""Builds the Rust extension with cargo and drops it into the package tree.

No Rust-specific build backend is required; plain setuptools plus an
installed cargo toolchain is enough. Works for both regular and editable
installs.
"""

import json
import subprocess
import sysconfig
from pathlib import Path
from shutil import copy2

from setuptools import setup
from setuptools.command.build_py import build_py

HERE = Path(__file__).parent.resolve()


def build_extension():
    subprocess.run(
        ["cargo", "build", "--release", "--features", "extension-module"],
        cwd=HERE,
        check=True,
    )
    meta = subprocess.run(
        ["cargo", "metadata", "--format-version", "1", "--no-deps"],
        cwd=HERE,
        check=True,
        capture_output=True,
        text=True,
    )
    target = Path(json.loads(meta.stdout)["target_directory"]) / "release"
    built = next(
        p
        for p in (target / "lib_netcohort.so", target / "_netcohort.dll", target / "lib_netcohort.dylib")
        if p.exists()
    )
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    dest = HERE / "python" / "netcohort" / f"_netcohort{suffix}"
    copy2(built, dest)


class CargoBuildPy(build_py):
    def run(self):
        build_extension()
        super().run()


setup(cmdclass={"build_py": CargoBuildPy})
