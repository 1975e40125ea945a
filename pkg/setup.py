from setuptools import setup

with open("README.md", "r") as readme:
    long_description = readme.read()


setup(
    name='hitandrun',
    version="0.1.0",
    license='Apache-2.0',
    author='Michael Bouzinier',
    author_email='mbouzinier@g.harvard.edu',
    description='Generalized Hit-and-Run for Gaussian targets: '
                'contraction rates, coupling, mixing bounds '
                'and randomized Kaczmarz',
    long_description = long_description,
    long_description_content_type = "text/markdown",
    package_dir={
        "hitandrun": "./src/python/hitandrun"
    },
    packages=["hitandrun"],
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent"],
    install_requires=[
        'nsaph>=0.0.2.7',
        'nsaph_utils',
        'numpy',
        'scipy',
        'pyyaml'
    ],
    extras_require={
        'test': ['pytest']
    },
    entry_points={
        'console_scripts': [
            'hitandrun=hitandrun.experiments:main'
        ]
    },
    package_data = {
        '': ["*.yaml", "**/*.yaml"]
    }
)
