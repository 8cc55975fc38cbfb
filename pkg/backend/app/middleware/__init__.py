"""MTGrow — Stage Guard Package"""
