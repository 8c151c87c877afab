"""Poincare histogram and fitting error"""
