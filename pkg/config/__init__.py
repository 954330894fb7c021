# config/__init__.py
# Run settings and system instance files
