# -*- coding: utf-8 -*-

from setuptools import find_packages, setup

with open("README.md", mode="r", encoding="utf-8") as file:
    readme_text = file.read()

setup(
    name="ladgpy",
    version="0.1.0",
    description="Localized adversarial domain generalization on toy data",
    long_description=readme_text,
    long_description_content_type="text/markdown",
    python_requires=">=3.10",
    packages=find_packages(exclude=["tests", "tests.*"]),
    py_modules=["ladg"],
    install_requires=[
        "numpy>=1.22",
        "tqdm",
        "matplotlib",
        "Pillow",
        "openpyxl",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["ladg=ladg:main"]},
)
