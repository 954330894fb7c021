# engine/__init__.py
# Broadcast bus, fan-out scheduler and the ADMM driver
