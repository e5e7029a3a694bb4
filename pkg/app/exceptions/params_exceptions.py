class InvalidParamsException(Exception): ...


class ConstraintViolationException(Exception):
    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index
