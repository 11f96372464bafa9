class InvalidInputException(Exception):
    """
    Exception raised when an argument violates an operation's precondition.
    """

    def __init__(self, message, status=2):

        super().__init__(message)

        self.status = status
