"""MTGrow — Utilities Package"""
