#!/usr/bin/env python

"""The setup script."""

from setuptools import setup, find_packages

with open('README.rst') as readme_file:
    readme = readme_file.read()

with open('HISTORY.rst') as history_file:
    history = history_file.read()

requirements = [
    'Click>=7.0',
    'numpy>=1.20',
    'pandas>=1.3',
    'python-dotenv>=0.19',
]

test_requirements = ['hypothesis>=6.0', ]

setup(
    author="storage-dr",
    author_email='lukas.franken@ed.ac.uk',
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
    description="online demand response and energy storage control with drift-plus-penalty, "
                "exact per-slot solvers and a sample-path verification harness",
    entry_points={
        'console_scripts': [
            'storage_dr=storage_dr.cli:cli_main',
        ],
    },
    install_requires=requirements,
    extras_require={'test': test_requirements},
    license="MIT license",
    long_description=readme + '\n\n' + history,
    include_package_data=True,
    package_data={'storage_dr': ['data/profiles/*.csv', 'data/scenarios/*.json']},
    keywords='storage_dr',
    name='storage_dr',
    packages=find_packages(include=['storage_dr', 'storage_dr.*']),
    test_suite='tests',
    tests_require=test_requirements,
    url='https://github.com/LukasFrankenQ/storage_dr',
    version='0.1.0',
    zip_safe=False,
)
