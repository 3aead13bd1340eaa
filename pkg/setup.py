from setuptools import find_packages, setup

setup(
    # Application name:
    name="cogload",

    # Version number (initial):
    version="0.1.0",

    # Packages
    packages=find_packages(exclude=["tests", "tests.*"]),

    # Details
    description="Cognitive workload classification from eye-gaze sequences with mixture hypernetwork LSTMs.",

    long_description_content_type='text/markdown',
    long_description=open('readme.md').read(),

    python_requires=">=3.8",

    # Dependent packages (distributions)
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "scikit-learn>=0.22",
        "matplotlib",
        "joblib",
        "tqdm",
        "click",
    ],

    extras_require={
        "test": ["pytest"],
    },

    entry_points={
        "console_scripts": ["cogload=cogload.cli:main"],
    },
)

# To build: python -m build (sdist and wheel into dist/)
