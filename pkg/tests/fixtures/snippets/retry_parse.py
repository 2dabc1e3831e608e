def retry_parse(texts):
    """Parse strings until one works; "for" and "if" may appear in them."""
    index = 0
    while index < len(texts):
        try:
            return float(texts[index])
        except ValueError:
            index += 1
    return None or 0.0
