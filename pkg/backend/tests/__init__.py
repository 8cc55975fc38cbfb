"""MTGrow — Test Package"""
