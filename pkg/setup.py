from setuptools import setup, find_packages

setup(
    name="inverse-planner",
    version="1.0.0",
    description="Bayesian inverse planning for naive and sophisticated hyperbolic discounters in gridworlds",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    include_package_data=True,
    package_data={"app.data": ["schemas/*.json", "scenarios/*.json", "properties/*.json"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        line.strip() for line in open("requirements.txt") if line.strip() and not line.startswith("#") and not line.startswith("pytest")
    ],
    extras_require={"test": ["pytest>=7.4"]},
    entry_points={
        "console_scripts": [
            "inverse-planner=app.main:main",
        ],
    },
)
