class BoundEvaluationException(Exception):
    def __init__(self, message: str, query):
        super().__init__(message)
        self.query = query
