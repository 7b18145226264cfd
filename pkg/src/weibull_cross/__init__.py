"""Weibull survival-curve crossing points and their sensitivity to parameter error."""
