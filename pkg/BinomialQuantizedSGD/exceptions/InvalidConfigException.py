class InvalidConfigException(Exception):
    """
    Exception raised when an experiment configuration is invalid.
    """

    def __init__(self, message, status=2):

        super().__init__(message)

        self.status = status
