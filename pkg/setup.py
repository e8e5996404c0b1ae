from setuptools import find_packages, setup

with open("README.md") as f:
    readme = f.read()

with open("LICENSE") as f:
    license = f.read()

with open("VERSION") as f:
    version = f.read().strip()

install_requires = ["numpy >= 1.20", "scipy >= 1.12", "pandas >= 1.5"]
excludes = ("tests", "tests.*", "docs", "examples")

setup(
    name="scalecs",
    version=version,
    description="Two-layer scalable compressive-imaging codec with total-variation reconstruction.",
    long_description=readme,
    long_description_content_type="text/markdown",
    author="scalecs contributors",
    license=license,
    packages=find_packages(exclude=excludes),
    package_data={"scalecs": ["config/*.config"]},
    include_package_data=True,
    install_requires=install_requires,
    python_requires=">=3.9",
    entry_points={"console_scripts": ["scalecs = scalecs.cli:main"]},
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Topic :: Multimedia :: Graphics :: Graphics Conversion",
        "Topic :: Scientific/Engineering :: Image Processing",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
