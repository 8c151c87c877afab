"""AV-node network model"""
