"""MTGrow — Services Package"""
