from setuptools import find_packages, setup

setup(
    name='anytime-ppi',
    packages=find_packages(exclude=["tests"]),
    version='0.1.0',
    description='Anytime-valid prediction-powered confidence sequences with prior assistance.',
    author='CILab',
    license='MIT',
    python_requires='>=3.9',
    install_requires=[
        'click',
        'easydict',
        'joblib',
        'numpy',
        'pandas',
        'PyYAML',
        'scipy',
        'tqdm',
    ],
    entry_points={
        'console_scripts': ['anytime-ppi=anytime_ppi.cli:main'],
    },
)
