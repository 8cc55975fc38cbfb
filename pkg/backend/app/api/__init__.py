"""MTGrow — CLI Command Package"""
