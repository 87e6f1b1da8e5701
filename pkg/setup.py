# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause


__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


from setuptools import setup, find_packages
import os
import re


# global variables
module_name = "edgeface_lite"
data_files = []


# parse version number
def find_version(file_path):
    with open(file_path, "r") as fp:
        version_file = fp.read()
        version_match = re.search(r"^__version__ = ['\"]([^'\"]*)['\"]",
                                  version_file, re.M)
    if version_match:
        return version_match.group(1)
    raise NameError("Version string must be defined in {}.".format(file_path))


# extend package with the json tables shipped next to the code
def extend_package(path):
    if os.path.isdir(path):
        data_files.extend(
            [os.path.relpath(os.path.join(root, f), path)
             for root, _, files in os.walk(path) for f in files
             if f.endswith(".json")]
        )
    elif os.path.isfile(path):
        data_files.append(os.path.basename(path))


extend_package(module_name)
pkg_version = find_version("{}/__init__.py".format(module_name))

setup(
    name=module_name,
    version=pkg_version,
    description="Face embedding backbone with low-rank linear layers, "
                "cost accounting and verification protocol",
    author="EdgeFace Lite developers",
    author_email="edgeface-lite@users.noreply.github.com",
    license="BSD 3-Clause License",
    packages=find_packages(exclude=["tests"]),
    package_data={
        module_name: data_files,
    },
    python_requires=">=3.8.0",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.6",
        "scikit-learn>=0.24",
        "graphviz>=0.17",
        "opencv-python-headless>=4.5",
        "matplotlib>=3.3"
    ],
    extras_require={
        "test": ["pytest"]
    },
    entry_points={
        "console_scripts": [
            "edgeface = {}.cli:main".format(module_name)
        ]
    }
)
