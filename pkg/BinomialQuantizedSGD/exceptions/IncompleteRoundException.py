class IncompleteRoundException(Exception):
    """
    Exception raised when the server is missing a client message for a round.
    """

    def __init__(self, message, status=2):

        super().__init__(message)

        self.status = status
