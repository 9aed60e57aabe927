import setuptools


def long_description():
    with open('README.md', 'r') as file:
        return file.read()

VERSION = "0.1.0"
setuptools.setup(
    name='poolcast',
    version=VERSION,
    author='Mardix',
    author_email='mardix@blackdevhub.io',
    description='Bayesian hierarchical forecasting of carpooling driver flows and passenger waiting times',
    long_description=long_description(),
    long_description_content_type='text/markdown',
    url='https://github.com/mardix/poolcast',
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Topic :: Scientific/Engineering :: Information Analysis',
    ],
    python_requires='>=3.8.0',
    install_requires = [
        "Jinja2 >= 3.0",
        "python-slugify",
        "arrow",
        "numpy >= 1.20",
        "scipy",
        "pandas >= 1.3"
    ],
    packages=['poolcast'],
    package_dir={'':'src'},
    entry_points={
        'console_scripts': ['poolcast = poolcast.cli:main']
    }
)
