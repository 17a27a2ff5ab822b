"""
Application package: models, schemas, services and controllers
"""
