"""MTGrow — multilingual NMT growth toolkit"""
