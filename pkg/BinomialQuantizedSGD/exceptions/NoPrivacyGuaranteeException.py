class NoPrivacyGuaranteeException(Exception):
    """
    Exception raised when a codec configuration cannot provide SGD privacy (m = 0).
    """

    def __init__(self, message, status=3):

        super().__init__(message)

        self.status = status
