"""Parsers for RR, AFR and outcome files; segmentation of beat series"""
