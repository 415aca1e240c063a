from setuptools import setup, find_packages
import re

with open("advgrad/__init__.py") as f:
    version = re.search(r'^__version__ = "([^"]+)"', f.read(), re.M).group(1)

setup(
    name="advgrad",
    version=version,
    description="Adversarial attacks, preprocessing defenses and adversarial training "
                "on a small reverse-mode autodiff engine",
    long_description=open("README.md").read(),
    license="MIT",
    install_requires=["numpy>=1.20", "regex"],
    extras_require={},
    dependency_links=[],
    packages=find_packages(exclude=["tests*"]),
    namespace_packages=[],
    test_suite="advgrad.test",
    package_data={},
    ext_modules=[],
    entry_points={"console_scripts": ["advgrad = advgrad.__main__:main"]},
)
