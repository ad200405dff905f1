"""
Analyse exacte et simulation de la file d'energie d'un emetteur rechargeable.

Modules :
- chain : chaine de Markov exacte et distribution stationnaire
- closedform : formule M/M/1/c, valeur corrigee, Geo/Geo/1/c
- montecarlo : simulation slot par slot (file d'energie, source conditionnee)
- sweep : balayage (delta, c) et export CSV / JSON
- cli : interface en ligne de commande
"""

__version__ = '1.0.0'
__author__ = 'Data Engineering Team'
