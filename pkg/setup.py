from setuptools import setup, find_packages

setup(
    name='PyDCF',
    version='0.1.0',
    description='A Python package for analyzing and simulating saturated IEEE 802.11 DCF networks with state dependent attempt rates and propagation delays.',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    py_modules=['pydcf_cli'],
    install_requires=[
        'numpy',
        'scipy',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': [
            'pydcf=pydcf_cli:main',
        ],
    },
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.12',
)
