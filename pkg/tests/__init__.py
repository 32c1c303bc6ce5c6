# tests/__init__.py

# This file is intentionally left blank to indicate that 'tests' is a Python package.
