# model/__init__.py
# System parameters, policy types and analytic evaluators
