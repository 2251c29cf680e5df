"""
FM-DAS 测试夹具
"""
