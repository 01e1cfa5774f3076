# app/presets/__init__.py
