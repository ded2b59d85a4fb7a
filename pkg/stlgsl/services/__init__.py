"""
Services package for the ST-LGSL toolkit
Contains data IO, graph learning, network layers, training and evaluation
"""
