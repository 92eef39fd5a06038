from setuptools import find_packages
from setuptools import setup

with open("./requirements.txt", "r", encoding="utf-8") as fh:
    install_requires = [line.strip() for line in fh if line.strip() and not line.startswith('#')]
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()
setup(
    install_requires=install_requires,
    packages=find_packages(exclude=("tests", "tests.*")),
    description="compact is a multi-teacher chain-of-thought distillation engine that weights every teacher "
                "rationale by adaptability, consensus and difficulty scores computed on the live student.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "License :: Other/Proprietary License",
        "Operating System :: OS Independent",
    ],
    entry_points={
        "console_scripts": ["compact=compact.cli:main"],
    },
    name='compact',
    version='0.1.0',
    author='compact',
    python_requires='>=3.8'
)
