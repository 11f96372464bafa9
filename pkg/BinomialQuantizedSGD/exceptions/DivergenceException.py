class DivergenceException(Exception):
    """
    Exception raised when training loss blows up past the divergence guard.
    """

    def __init__(self, message, status=4, rows=None):

        super().__init__(message)

        self.status = status
        # metrics recorded before the guard tripped
        self.rows = rows if rows is not None else []
