class CorruptMessageException(Exception):
    """
    Exception raised when a quantized message or frame fails validation.
    """

    def __init__(self, message, status=2):

        super().__init__(message)

        self.status = status
