import setuptools
from pathlib import Path

# read the contents of your README file
current_directory = Path(__file__).parent
long_description = (current_directory / "README.md").read_text()

setuptools.setup(
    name="BinomialQuantizedSGD",
    packages=[
        "BinomialQuantizedSGD",
        "BinomialQuantizedSGD.api",
        "BinomialQuantizedSGD.codec",
        "BinomialQuantizedSGD.exceptions",
        "BinomialQuantizedSGD.model",
        "BinomialQuantizedSGD.planner",
        "BinomialQuantizedSGD.privacy",
        "BinomialQuantizedSGD.sim",
        "BinomialQuantizedSGD.utils",
        "BinomialQuantizedSGD.wire",
    ],
    setuptools_git_versioning={
        "enabled": True,
        "dev_template": "{tag}",
    },
    license="GPL-3.0",
    description="Differentially private quantized SGD with binomial noise: planner, simulator and privacy accountant",
    long_description=long_description,
    long_description_content_type="text/markdown",
    keywords=["federated learning", "differential privacy", "quantization", "SGD"],
    python_requires=">=3.8",
    install_requires=["numpy", "scipy", "requests"],
    setup_requires=["setuptools-git-versioning"],
    entry_points={
        "console_scripts": ["bq-sgd=BinomialQuantizedSGD.cli:main"],
    },
    classifiers=[],
)
