# app/fit_models/__init__.py
