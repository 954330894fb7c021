# solvers/__init__.py
# Linear programming, policy optimization, regions and sensing
