# sim/__init__.py
# Slotted-channel Monte Carlo simulator
