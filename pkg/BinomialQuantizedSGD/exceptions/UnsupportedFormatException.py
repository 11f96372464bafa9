class UnsupportedFormatException(Exception):
    """
    Exception raised when a frame or IDX file has an unknown magic or version.
    """

    def __init__(self, message, status=2):

        super().__init__(message)

        self.status = status
