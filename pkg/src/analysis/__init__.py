"""Reduction of posteriors to AV-node properties and trend analysis"""
