"""E2E tests"""
