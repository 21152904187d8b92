"""Radar, trajectory, navigation and covariance models"""
