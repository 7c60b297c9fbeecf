"""
Пакет EdgeMsFEM для исследований сходимости краевых многомасштабных методов.
"""
