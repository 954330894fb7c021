# agents/__init__.py
# Secondary-user nodes for the distributed solver
