"""Parameter estimators"""
