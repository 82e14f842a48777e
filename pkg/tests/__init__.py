"""dsmin test suite"""
