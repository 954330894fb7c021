# utils/__init__.py
# Errors, artifact files and run manifests
