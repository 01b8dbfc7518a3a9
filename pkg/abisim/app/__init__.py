"""Command-line application"""
