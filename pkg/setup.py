from setuptools import setup, find_packages

setup(
    name="oscilla",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "python-dotenv>=1.0.0",
        "sqlalchemy>=2.0.23",
        "numpy>=1.24",
        "scipy>=1.12",
    ],
    extras_require={
        "plot": ["matplotlib>=3.7"],
        "test": ["hypothesis>=6.80"],
    },
    python_requires=">=3.9",
    author="oscilla developers",
    author_email="example@example.com",
    description="Homogenization of a Laplace-Beltrami problem on a thin strip with an oscillating boundary",
    keywords="homogenization, finite elements, thin domains, oscillating boundary",
    entry_points={
        "console_scripts": [
            "oscilla=oscilla.cli:main",
        ],
    },
)
