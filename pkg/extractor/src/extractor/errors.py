class ExtractError(Exception):
    """Unusable extraction request: bad spec values, empty image root, or
    nothing decodable under it."""
