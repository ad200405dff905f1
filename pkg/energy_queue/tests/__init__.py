"""
Tests du toolkit de file d'energie.
"""
