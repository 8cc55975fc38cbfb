"""MTGrow — Pydantic Schemas Package"""
