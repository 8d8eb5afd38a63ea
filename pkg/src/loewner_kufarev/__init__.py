"""Numerical Loewner-Kufarev flows on the unit disc and their boundary regularity."""
